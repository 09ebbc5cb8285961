//! Deterministic solver for the large-population density limit: coupled
//! reaction-diffusion equations for diffusive species and integro-ODEs for
//! the anchor masses of localized species, with kernel-convolution reaction
//! terms. A Picard fixed-point mode re-solves the same discretization with
//! coefficients frozen at the previous iterate, cross-validating the direct
//! method-of-lines solution.
//!
//! The diffusion operator is the adjoint of the particle motion: a species
//! stepped with per-coordinate variance `sigma2 * dt` has density diffusivity
//! `sigma2 / 2`.

mod grid;

pub use grid::{Grid, Stencil};

use crate::error::{Result, SimError};
use crate::geometry::{dist2, Point};
use crate::network::{
    InitialSpec, MassCenter, Network, ProfileSpec, Reaction, ReactionClass, SolverSettings,
};
use crate::state::falling_factorial;

/// Gridded densities for diffusive species plus scalar anchor masses for
/// localized species. Species with `tracked = false` (the hybrid
/// simulator's discrete species) are ignored by every operation.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub grid: Grid,
    pub cells: Vec<Option<Vec<f64>>>,
    pub masses: Vec<f64>,
    pub tracked: Vec<bool>,
    pub time: f64,
    /// Accumulated mass clipped away by negativity correction.
    pub negativity_defect: f64,
}

impl DensityField {
    pub fn zero(net: &Network, grid: Grid) -> Self {
        let n = net.species.len();
        let mut cells = Vec::with_capacity(n);
        let mut tracked = Vec::with_capacity(n);
        for s in &net.species {
            let is_tracked = !s.is_small();
            tracked.push(is_tracked);
            cells.push(if is_tracked && s.moves() {
                Some(vec![0.0; grid.n_cells()])
            } else {
                None
            });
        }
        DensityField {
            grid,
            cells,
            masses: vec![0.0; n],
            tracked,
            time: 0.0,
            negativity_defect: 0.0,
        }
    }

    /// Build the initial field from per-species initial data. Counts convert
    /// to limit masses with weight 1/N for abundant species.
    pub fn from_initial(net: &Network, initial: &[InitialSpec], grid: Grid) -> Result<Self> {
        let mut field = DensityField::zero(net, grid);
        for (x, spec) in initial.iter().enumerate() {
            if !field.tracked[x] {
                continue;
            }
            let weight = net.weight(x);
            match (&net.species[x].locality, spec) {
                (crate::network::Locality::Diffusive, InitialSpec::Profile(p)) => {
                    let values = field.cells[x].as_mut().expect("diffusive tracked");
                    fill_profile(&field.grid, values, p)?;
                }
                (crate::network::Locality::Diffusive, InitialSpec::Count(c)) => {
                    // A bare count spreads uniformly, with particle weight.
                    let values = field.cells[x].as_mut().expect("diffusive tracked");
                    let dens = *c as f64 * weight / field.grid.domain.volume();
                    values.fill(dens);
                }
                (crate::network::Locality::Localized { .. }, InitialSpec::Count(c)) => {
                    field.masses[x] = *c as f64 * weight;
                }
                (crate::network::Locality::Localized { anchor }, InitialSpec::Profile(p)) => {
                    match p {
                        ProfileSpec::Point { at, mass }
                            if dist2(&crate::geometry::point_from(at), anchor, net.domain.dim)
                                == 0.0 =>
                        {
                            field.masses[x] = *mass;
                        }
                        _ => {
                            return Err(SimError::config(format!(
                                "species '{}': localized species take a count or a point mass \
                                 at their anchor",
                                net.species[x].name
                            )))
                        }
                    }
                }
            }
        }
        Ok(field)
    }

    /// `sum_x int |mu(x, .)| + sum_loc |mass|` over tracked species.
    pub fn l1_norm(&self) -> f64 {
        let mut total = 0.0;
        for (x, c) in self.cells.iter().enumerate() {
            if !self.tracked[x] {
                continue;
            }
            match c {
                Some(values) => {
                    total += values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
                }
                None => total += self.masses[x].abs(),
            }
        }
        total
    }

    /// L1 distance to another field on the same grid (tracked species only).
    pub fn l1_distance(&self, other: &DensityField) -> f64 {
        let mut total = 0.0;
        for (x, c) in self.cells.iter().enumerate() {
            if !self.tracked[x] {
                continue;
            }
            match (c, &other.cells[x]) {
                (Some(a), Some(b)) => {
                    total += a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum::<f64>()
                        * self.grid.cell_volume()
                }
                _ => total += (self.masses[x] - other.masses[x]).abs(),
            }
        }
        total
    }

    pub fn species_mass(&self, x: usize) -> f64 {
        match &self.cells[x] {
            Some(values) => self.grid.integral(values),
            None => self.masses[x],
        }
    }

    fn clip_negative(&mut self) {
        let vol = self.grid.cell_volume();
        for c in self.cells.iter_mut().flatten() {
            for v in c.iter_mut() {
                if *v < 0.0 {
                    if *v < -1e-12 {
                        self.negativity_defect += -*v * vol;
                    }
                    *v = 0.0;
                }
            }
        }
        for m in &mut self.masses {
            if *m < 0.0 {
                if *m < -1e-12 {
                    self.negativity_defect += -*m;
                }
                *m = 0.0;
            }
        }
    }
}

/// Grid a density profile (shared with the initial-measure sampler).
pub(crate) fn fill_profile_values(
    grid: &Grid,
    values: &mut [f64],
    profile: &ProfileSpec,
) -> Result<()> {
    fill_profile(grid, values, profile)
}

fn fill_profile(grid: &Grid, values: &mut [f64], profile: &ProfileSpec) -> Result<()> {
    match profile {
        ProfileSpec::Uniform { mass } => {
            values.fill(mass / grid.domain.volume());
        }
        ProfileSpec::Bump { center, width, mass } => {
            if !(*width > 0.0) {
                return Err(SimError::config("bump profile needs width > 0"));
            }
            let c = crate::geometry::point_from(center);
            for flat in 0..grid.n_cells() {
                let y = grid.center(flat);
                let d = dist2(&y, &c, grid.dim()).sqrt();
                let u = d / width;
                values[flat] = if u < 1.0 {
                    let h = (std::f64::consts::FRAC_PI_2 * u).cos();
                    h * h
                } else {
                    0.0
                };
            }
            let raw = grid.integral(values);
            if raw <= 0.0 {
                return Err(SimError::config("bump profile lies outside the domain"));
            }
            for v in values.iter_mut() {
                *v *= mass / raw;
            }
        }
        ProfileSpec::Point { at, mass } => {
            grid.deposit_hat(values, &crate::geometry::point_from(at), *mass);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExplicitEuler,
    /// Diffusion implicit (unconditionally stable), reactions explicit.
    Imex,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub cells: usize,
    pub cfl_safety: f64,
    /// Per-step negativity clip allowance before the step errors out.
    pub negativity_tol: f64,
}

impl SolverConfig {
    pub fn new(scheme: Scheme, dt: f64, cells: usize) -> Self {
        SolverConfig { scheme, dt, cells, cfl_safety: 0.9, negativity_tol: 1e-6 }
    }

    pub fn from_settings(s: &SolverSettings) -> Result<Self> {
        let scheme = match s.scheme.as_str() {
            "explicit_euler" | "explicit" => Scheme::ExplicitEuler,
            "imex" => Scheme::Imex,
            other => {
                return Err(SimError::config(format!(
                    "unknown scheme '{other}' (expected explicit_euler or imex)"
                )))
            }
        };
        if !(s.dt > 0.0) {
            return Err(SimError::config("solver dt must be > 0"));
        }
        Ok(SolverConfig {
            scheme,
            dt: s.dt,
            cells: s.cells,
            cfl_safety: s.cfl_safety,
            negativity_tol: 1e-6,
        })
    }
}

/// Per-reaction intensity: the reaction's rate density over locations (for
/// spatially distributed reactions) or its scalar rate (for localized ones).
/// The same object feeds the density solver's gain/loss terms and the hybrid
/// simulator's jump hazards.
pub enum Intensity {
    PerCell(Vec<f64>),
    AtPoint { location: Point, value: f64 },
}

impl Intensity {
    /// Total event rate: the location integral of the intensity.
    pub fn total(&self, grid: &Grid) -> f64 {
        match self {
            Intensity::PerCell(v) => grid.integral(v),
            Intensity::AtPoint { value, .. } => *value,
        }
    }
}

/// Source/sink assembly for one step: `d mu/dt = diffusion + gain - loss * mu`.
pub struct ReactionTerms {
    pub gain_cells: Vec<Option<Vec<f64>>>,
    pub loss_cells: Vec<Option<Vec<f64>>>,
    pub gain_mass: Vec<f64>,
    pub loss_mass: Vec<f64>,
}

enum MassArg {
    Scalar(f64),
    PerCell(Vec<f64>),
}

#[derive(Debug)]
pub struct Solver {
    pub cfg: SolverConfig,
    pub grid: Grid,
    kernel_stencil: Stencil,
    /// Window stencils for mass functionals centred at the reaction location.
    window_stencils: Vec<Option<Stencil>>,
}

impl Solver {
    pub fn new(net: &Network, cfg: SolverConfig) -> Result<Self> {
        for r in &net.reactions {
            if r.limit_exponent() != 0 {
                return Err(SimError::config(format!(
                    "reaction '{}' has residual scale exponent {}; the density and hybrid \
                     limits need every reaction balanced (expected scale_exponent = {})",
                    r.name,
                    r.limit_exponent(),
                    r.rate.scale_exponent - r.limit_exponent(),
                )));
            }
        }
        let grid = Grid::new(&net.domain, cfg.cells)?;
        if cfg.scheme == Scheme::ExplicitEuler {
            let max_s2 = net.species.iter().map(|s| s.motion.sigma2).fold(0.0f64, f64::max);
            if max_s2 > 0.0 {
                let dx2 =
                    (0..grid.dim()).map(|i| grid.dx[i] * grid.dx[i]).fold(f64::MAX, f64::min);
                let limit = cfg.cfl_safety * dx2 / (2.0 * grid.dim() as f64 * max_s2);
                if cfg.dt > limit {
                    return Err(SimError::config(format!(
                        "explicit scheme violates the diffusion CFL bound: dt {} > {limit:.3e}",
                        cfg.dt
                    )));
                }
            }
        }
        let kernel_stencil = Stencil::for_kernel(&grid, &net.kernel)?;
        let mut window_stencils = Vec::with_capacity(net.reactions.len());
        for r in &net.reactions {
            let st = match &r.rate.mass {
                Some(m) if m.center == MassCenter::Reaction && r.location().is_none() => {
                    let mm = m.clone();
                    Some(Stencil::new(&grid, m.radius, move |d| mm.profile(d), false)?)
                }
                _ => None,
            };
            window_stencils.push(st);
        }
        Ok(Solver { cfg, grid, kernel_stencil, window_stencils })
    }

    /// Kernel-smeared co-reactant factor for an abundant species: discrete
    /// convolution for diffusive species, anchored analytic kernel times the
    /// mass for localized species.
    fn smear_factor(&self, net: &Network, field: &DensityField, species: usize) -> Vec<f64> {
        match &field.cells[species] {
            Some(values) => {
                let mut out = vec![0.0; self.grid.n_cells()];
                self.kernel_stencil.convolve(&self.grid, values, &mut out);
                out
            }
            None => {
                let anchor = net.species[species].anchor().expect("localized species");
                let mut out = self.grid.kernel_field(&net.kernel, anchor);
                for v in &mut out {
                    *v *= field.masses[species];
                }
                out
            }
        }
    }

    /// Same factor evaluated at one point (for localized reactions).
    fn smear_at(&self, net: &Network, field: &DensityField, species: usize, at: &Point) -> f64 {
        match &field.cells[species] {
            Some(values) => {
                let mut acc = 0.0;
                for (flat, v) in values.iter().enumerate() {
                    if *v != 0.0 {
                        acc += net.kernel.eval_between(&self.grid.center(flat), at) * v;
                    }
                }
                acc * self.grid.cell_volume()
            }
            None => {
                let anchor = net.species[species].anchor().expect("localized species");
                net.kernel.eval_between(anchor, at) * field.masses[species]
            }
        }
    }

    /// Window mass at a fixed centre.
    fn window_at(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
        mass: &crate::network::MassFunctional,
        center: &Point,
    ) -> f64 {
        let mut total = 0.0;
        for &t in &mass.targets {
            match &field.cells[t] {
                Some(values) => {
                    let mut acc = 0.0;
                    for (flat, v) in values.iter().enumerate() {
                        if *v != 0.0 {
                            let d = dist2(&self.grid.center(flat), center, self.grid.dim()).sqrt();
                            acc += mass.profile(d) * v;
                        }
                    }
                    total += acc * self.grid.cell_volume();
                }
                None => {
                    let anchor = net.species[t].anchor().expect("localized species");
                    let d = dist2(anchor, center, net.domain.dim).sqrt();
                    let amount = if field.tracked[t] {
                        field.masses[t]
                    } else {
                        discrete.map_or(0.0, |c| c[t] as f64)
                    };
                    total += mass.profile(d) * amount;
                }
            }
        }
        total
    }

    /// Regulating mass argument for a mass-dependent factor.
    fn mass_argument(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
        r_id: usize,
    ) -> Option<MassArg> {
        let r = &net.reactions[r_id];
        let mass = r.rate.mass.as_ref()?;
        match mass.center {
            MassCenter::Fixed(p) => {
                Some(MassArg::Scalar(self.window_at(net, field, discrete, mass, &p)))
            }
            MassCenter::Reaction => {
                if let Some(loc) = r.location() {
                    return Some(MassArg::Scalar(self.window_at(net, field, discrete, mass, loc)));
                }
                // Window follows the candidate location: one value per cell.
                let mut per_cell = vec![0.0; self.grid.n_cells()];
                let stencil = self.window_stencils[r_id].as_ref().expect("window stencil");
                let mut tmp = vec![0.0; self.grid.n_cells()];
                for &t in &mass.targets {
                    match &field.cells[t] {
                        Some(values) => {
                            stencil.convolve(&self.grid, values, &mut tmp);
                            for (p, v) in per_cell.iter_mut().zip(&tmp) {
                                *p += v;
                            }
                        }
                        None => {
                            let anchor = net.species[t].anchor().expect("localized species");
                            let amount = if field.tracked[t] {
                                field.masses[t]
                            } else {
                                discrete.map_or(0.0, |c| c[t] as f64)
                            };
                            for (flat, p) in per_cell.iter_mut().enumerate() {
                                let d =
                                    dist2(&self.grid.center(flat), anchor, self.grid.dim()).sqrt();
                                *p += mass.profile(d) * amount;
                            }
                        }
                    }
                }
                Some(MassArg::PerCell(per_cell))
            }
        }
    }

    /// Discrete-count factor `prod_x (count_x)_{nu_x} Gamma(anchor_x - y)^{nu_x}`.
    fn discrete_factor_at(&self, net: &Network, r: &Reaction, counts: &[u64], y: &Point) -> f64 {
        let mut f = 1.0;
        for x in net.small_species() {
            let nu = r.nu[x];
            if nu == 0 {
                continue;
            }
            let anchor = net.species[x].anchor().expect("small species are localized");
            f *= falling_factorial(counts[x], nu as u64)
                * net.kernel.eval_between(anchor, y).powi(nu as i32);
            if f == 0.0 {
                return 0.0;
            }
        }
        f
    }

    /// Rate intensity of one reaction for the current field (and discrete
    /// counts, when simulating the hybrid limit).
    pub fn reaction_intensity(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
        r_id: usize,
    ) -> Result<Intensity> {
        let r = &net.reactions[r_id];
        let mass_arg = self.mass_argument(net, field, discrete, r_id);
        if let Some(loc) = r.location() {
            let a = match &mass_arg {
                Some(MassArg::Scalar(a)) => *a,
                Some(MassArg::PerCell(_)) => unreachable!("localized uses scalar window"),
                None => 0.0,
            };
            let mut value = r.limit_rate_factor(loc, a);
            for j in 0..r.abundant_sources {
                if value == 0.0 {
                    break;
                }
                value *= self.smear_at(net, field, r.sources[j], loc);
            }
            if let Some(counts) = discrete {
                value *= self.discrete_factor_at(net, r, counts, loc);
            }
            return Ok(Intensity::AtPoint { location: *loc, value });
        }
        let mut p = vec![0.0; self.grid.n_cells()];
        for (flat, pv) in p.iter_mut().enumerate() {
            let y = self.grid.center(flat);
            let a = match &mass_arg {
                Some(MassArg::Scalar(a)) => *a,
                Some(MassArg::PerCell(v)) => v[flat],
                None => 0.0,
            };
            *pv = r.limit_rate_factor(&y, a);
        }
        for j in 0..r.abundant_sources {
            let smear = self.smear_factor(net, field, r.sources[j]);
            for (pv, s) in p.iter_mut().zip(&smear) {
                *pv *= s;
            }
        }
        if let Some(counts) = discrete {
            for (flat, pv) in p.iter_mut().enumerate() {
                if *pv != 0.0 {
                    *pv *= self.discrete_factor_at(net, r, counts, &self.grid.center(flat));
                }
            }
        }
        Ok(Intensity::PerCell(p))
    }

    /// Assemble per-species gain densities and loss-rate coefficients. With
    /// `discrete` counts the assembly is restricted to reactions that leave
    /// the discrete counts unchanged (the hybrid flow); otherwise the
    /// network must have no discrete species and all reactions enter.
    pub fn reaction_terms(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
    ) -> Result<ReactionTerms> {
        let n = net.species.len();
        let n_cells = self.grid.n_cells();
        let mut terms = ReactionTerms {
            gain_cells: field
                .cells
                .iter()
                .map(|c| c.as_ref().map(|_| vec![0.0; n_cells]))
                .collect(),
            loss_cells: field
                .cells
                .iter()
                .map(|c| c.as_ref().map(|_| vec![0.0; n_cells]))
                .collect(),
            gain_mass: vec![0.0; n],
            loss_mass: vec![0.0; n],
        };
        for (r_id, r) in net.reactions.iter().enumerate() {
            if discrete.is_some() && r.class == ReactionClass::Jump {
                continue;
            }
            self.accumulate_reaction(net, field, discrete, r_id, &mut terms)?;
        }
        Ok(terms)
    }

    fn accumulate_reaction(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
        r_id: usize,
        terms: &mut ReactionTerms,
    ) -> Result<()> {
        let r = &net.reactions[r_id];
        let intensity = self.reaction_intensity(net, field, discrete, r_id)?;

        // Gains: every actually-inserted product of a tracked species.
        match &intensity {
            Intensity::PerCell(p) => {
                for (j, &x) in r.products.iter().enumerate() {
                    if !r.inserted[j] || !field.tracked[x] {
                        continue;
                    }
                    let gain = terms.gain_cells[x]
                        .as_mut()
                        .expect("non-localized reactions produce diffusive species");
                    for (g, pv) in gain.iter_mut().zip(p) {
                        *g += pv;
                    }
                }
            }
            Intensity::AtPoint { location, value } => {
                for (j, &x) in r.products.iter().enumerate() {
                    if !r.inserted[j] || !field.tracked[x] {
                        continue;
                    }
                    match terms.gain_cells[x].as_mut() {
                        Some(gain) => self.grid.deposit_hat(gain, location, *value),
                        None => terms.gain_mass[x] += value,
                    }
                }
            }
        }

        // Losses: every consumed abundant source occurrence. The loss for
        // occurrence i excludes its own smear factor from the intensity;
        // rebuild the partial product explicitly (at most 4 factors).
        for i in 0..r.abundant_sources {
            if !r.consume[i] {
                continue;
            }
            let x = r.sources[i];
            if !field.tracked[x] {
                continue;
            }
            match r.location() {
                None => {
                    let partial = self.partial_intensity(net, field, discrete, r_id, i)?;
                    match terms.loss_cells[x].as_mut() {
                        Some(loss) => {
                            // Smear the partial intensity back onto the
                            // consumed species' positions.
                            let mut sm = vec![0.0; self.grid.n_cells()];
                            self.kernel_stencil.convolve(&self.grid, &partial, &mut sm);
                            for (l, s) in loss.iter_mut().zip(&sm) {
                                *l += s;
                            }
                        }
                        None => {
                            let anchor = net.species[x].anchor().expect("localized");
                            let kf = self.grid.kernel_field(&net.kernel, anchor);
                            let mut acc = 0.0;
                            for (pv, k) in partial.iter().zip(&kf) {
                                acc += pv * k;
                            }
                            terms.loss_mass[x] += acc * self.grid.cell_volume();
                        }
                    }
                }
                Some(loc) => {
                    let partial = self.partial_intensity_at(net, field, discrete, r_id, i, loc)?;
                    match terms.loss_cells[x].as_mut() {
                        Some(loss) => {
                            let kf = self.grid.kernel_field(&net.kernel, loc);
                            for (l, k) in loss.iter_mut().zip(&kf) {
                                *l += partial * k;
                            }
                        }
                        None => {
                            let anchor = net.species[x].anchor().expect("localized");
                            terms.loss_mass[x] += partial * net.kernel.eval_between(anchor, loc);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Intensity with the smear factor of abundant source occurrence `skip`
    /// removed (per-cell version, non-localized reactions).
    fn partial_intensity(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
        r_id: usize,
        skip: usize,
    ) -> Result<Vec<f64>> {
        let r = &net.reactions[r_id];
        let mass_arg = self.mass_argument(net, field, discrete, r_id);
        let mut p = vec![0.0; self.grid.n_cells()];
        for (flat, pv) in p.iter_mut().enumerate() {
            let y = self.grid.center(flat);
            let a = match &mass_arg {
                Some(MassArg::Scalar(a)) => *a,
                Some(MassArg::PerCell(v)) => v[flat],
                None => 0.0,
            };
            *pv = r.limit_rate_factor(&y, a);
        }
        for j in 0..r.abundant_sources {
            if j == skip {
                continue;
            }
            let smear = self.smear_factor(net, field, r.sources[j]);
            for (pv, s) in p.iter_mut().zip(&smear) {
                *pv *= s;
            }
        }
        if let Some(counts) = discrete {
            for (flat, pv) in p.iter_mut().enumerate() {
                if *pv != 0.0 {
                    *pv *= self.discrete_factor_at(net, r, counts, &self.grid.center(flat));
                }
            }
        }
        Ok(p)
    }

    fn partial_intensity_at(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
        r_id: usize,
        skip: usize,
        loc: &Point,
    ) -> Result<f64> {
        let r = &net.reactions[r_id];
        let a = match self.mass_argument(net, field, discrete, r_id) {
            Some(MassArg::Scalar(a)) => a,
            Some(MassArg::PerCell(_)) => unreachable!("localized uses scalar window"),
            None => 0.0,
        };
        let mut v = r.limit_rate_factor(loc, a);
        for j in 0..r.abundant_sources {
            if j == skip || v == 0.0 {
                continue;
            }
            v *= self.smear_at(net, field, r.sources[j], loc);
        }
        if let Some(counts) = discrete {
            v *= self.discrete_factor_at(net, r, counts, loc);
        }
        Ok(v)
    }

    /// Pure motion step: diffusion (and drift) of every tracked diffusive
    /// species, no reaction terms. Conserves each species' mass exactly.
    pub fn diffusion_step(&self, net: &Network, field: &DensityField, dt: f64) -> Result<DensityField> {
        let mut next = field.clone();
        for x in 0..net.species.len() {
            if !field.tracked[x] {
                continue;
            }
            if let Some(mu) = &field.cells[x] {
                let out = next.cells[x].as_mut().expect("tracked diffusive");
                let motion = &net.species[x].motion;
                let diffusivity = motion.sigma2 / 2.0;
                match self.cfg.scheme {
                    Scheme::ExplicitEuler => {
                        let lap = laplacian(&self.grid, mu);
                        let adv = advection(&self.grid, mu, &motion.drift);
                        for c in 0..mu.len() {
                            out[c] = mu[c] + dt * (diffusivity * lap[c] + adv[c]);
                        }
                    }
                    Scheme::Imex => {
                        let adv = advection(&self.grid, mu, &motion.drift);
                        let mut star = vec![0.0; mu.len()];
                        for c in 0..mu.len() {
                            star[c] = mu[c] + dt * adv[c];
                        }
                        implicit_diffusion(&self.grid, &mut star, diffusivity * dt)?;
                        out.copy_from_slice(&star);
                    }
                }
            }
        }
        next.time = field.time + dt;
        Ok(next)
    }

    /// One time step of the configured scheme. Reaction coefficients are
    /// evaluated on `coeff` (equal to `field` for the direct method, the
    /// previous iterate for Picard sweeps); the loss stays proportional to
    /// the evolving field.
    pub fn step(
        &self,
        net: &Network,
        field: &DensityField,
        coeff: &DensityField,
        dt: f64,
        discrete: Option<&[u64]>,
    ) -> Result<DensityField> {
        let terms = self.reaction_terms(net, coeff, discrete)?;
        let mut next = field.clone();
        for x in 0..net.species.len() {
            if !field.tracked[x] {
                continue;
            }
            match &field.cells[x] {
                Some(mu) => {
                    let gain = terms.gain_cells[x].as_ref().expect("tracked diffusive");
                    let loss = terms.loss_cells[x].as_ref().expect("tracked diffusive");
                    let out = next.cells[x].as_mut().expect("tracked diffusive");
                    let motion = &net.species[x].motion;
                    let diffusivity = motion.sigma2 / 2.0;
                    match self.cfg.scheme {
                        Scheme::ExplicitEuler => {
                            let lap = laplacian(&self.grid, mu);
                            let adv = advection(&self.grid, mu, &motion.drift);
                            for c in 0..mu.len() {
                                out[c] = mu[c]
                                    + dt * (diffusivity * lap[c] + adv[c] + gain[c]
                                        - loss[c] * mu[c]);
                            }
                        }
                        Scheme::Imex => {
                            let adv = advection(&self.grid, mu, &motion.drift);
                            let mut star = vec![0.0; mu.len()];
                            for c in 0..mu.len() {
                                star[c] = mu[c] + dt * (adv[c] + gain[c] - loss[c] * mu[c]);
                            }
                            implicit_diffusion(&self.grid, &mut star, diffusivity * dt)?;
                            out.copy_from_slice(&star);
                        }
                    }
                }
                None => {
                    next.masses[x] = field.masses[x]
                        + dt * (terms.gain_mass[x] - terms.loss_mass[x] * field.masses[x]);
                }
            }
        }
        next.time = field.time + dt;
        let defect_before = next.negativity_defect;
        next.clip_negative();
        if next.negativity_defect - defect_before > self.cfg.negativity_tol {
            return Err(SimError::numeric(format!(
                "negativity defect {:.3e} in one step exceeds tolerance {:.1e} at t = {:.6}",
                next.negativity_defect - defect_before,
                self.cfg.negativity_tol,
                next.time
            )));
        }
        Ok(next)
    }

    /// Direct method-of-lines solve to `t_end`.
    pub fn solve(
        &self,
        net: &Network,
        field0: &DensityField,
        t_end: f64,
        mut on_step: Option<&mut dyn FnMut(&DensityField)>,
    ) -> Result<DensityField> {
        self.require_no_discrete(net)?;
        let mut field = field0.clone();
        while field.time < t_end - 1e-12 {
            let dt = self.cfg.dt.min(t_end - field.time);
            let coeff = field.clone();
            field = self.step(net, &field, &coeff, dt, None)?;
            if let Some(cb) = on_step.as_deref_mut() {
                cb(&field);
            }
        }
        Ok(field)
    }

    /// Picard fixed-point sweeps: `n_iters` linearized solves, coefficients
    /// frozen at the previous iterate's trajectory, on the same space-time
    /// grid as `solve`. Returns the final iterate's trajectory (one field
    /// per step, including t = 0) and the sup-over-time L1 gap sequence.
    pub fn picard_solve(
        &self,
        net: &Network,
        field0: &DensityField,
        t_end: f64,
        n_iters: usize,
    ) -> Result<(Vec<DensityField>, Vec<f64>)> {
        self.require_no_discrete(net)?;
        let steps = (t_end / self.cfg.dt).ceil() as usize;
        let mut prev: Vec<DensityField> = (0..=steps)
            .map(|s| {
                let mut f = field0.clone();
                f.time = (self.cfg.dt * s as f64).min(t_end);
                f
            })
            .collect();
        let mut gaps = Vec::with_capacity(n_iters);
        let mut grow_streak = 0;
        for sweep in 0..n_iters {
            let mut cur = Vec::with_capacity(steps + 1);
            cur.push(field0.clone());
            for s in 0..steps {
                let dt = (t_end - s as f64 * self.cfg.dt).min(self.cfg.dt);
                let next = self.step(net, &cur[s], &prev[s], dt, None)?;
                cur.push(next);
            }
            let gap = cur
                .iter()
                .zip(&prev)
                .map(|(a, b)| a.l1_distance(b))
                .fold(0.0f64, f64::max);
            if let Some(&last) = gaps.last() {
                grow_streak = if gap > last { grow_streak + 1 } else { 0 };
                if grow_streak >= 3 {
                    return Err(SimError::numeric(format!(
                        "Picard iteration diverging: gaps grew for 3 consecutive sweeps \
                         (gap {gap:.3e} at sweep {sweep})"
                    )));
                }
            }
            gaps.push(gap);
            prev = cur;
        }
        Ok((prev, gaps))
    }

    /// March to a fixed point: stop when the L1 change per unit time drops
    /// below `tol`. Returns the field and the discrete stationary residual.
    pub fn steady_state(
        &self,
        net: &Network,
        field0: &DensityField,
        tol: f64,
        max_steps: usize,
    ) -> Result<(DensityField, f64)> {
        self.require_no_discrete(net)?;
        let mut field = field0.clone();
        let mut trace = std::collections::VecDeque::with_capacity(5);
        for _ in 0..max_steps {
            let coeff = field.clone();
            let next = self.step(net, &field, &coeff, self.cfg.dt, None)?;
            let change = next.l1_distance(&field) / self.cfg.dt;
            field = next;
            if trace.len() == 5 {
                trace.pop_front();
            }
            trace.push_back(change);
            if change < tol {
                let residual = self.stationary_residual(net, &field, None)?;
                return Ok((field, residual));
            }
        }
        Err(SimError::numeric(format!(
            "steady state not reached in {max_steps} steps; recent L1 changes per unit time {:?}",
            trace
        )))
    }

    /// Right-hand side of the stationary system at a field, reported as a
    /// discrete l2 norm (cell values weighted by cell volume, plus point
    /// masses).
    pub fn stationary_residual(
        &self,
        net: &Network,
        field: &DensityField,
        discrete: Option<&[u64]>,
    ) -> Result<f64> {
        let terms = self.reaction_terms(net, field, discrete)?;
        let mut sq = 0.0;
        for x in 0..net.species.len() {
            if !field.tracked[x] {
                continue;
            }
            match &field.cells[x] {
                Some(mu) => {
                    let motion = &net.species[x].motion;
                    let lap = laplacian(&self.grid, mu);
                    let adv = advection(&self.grid, mu, &motion.drift);
                    let gain = terms.gain_cells[x].as_ref().unwrap();
                    let loss = terms.loss_cells[x].as_ref().unwrap();
                    for c in 0..mu.len() {
                        let rhs =
                            motion.sigma2 / 2.0 * lap[c] + adv[c] + gain[c] - loss[c] * mu[c];
                        sq += rhs * rhs * self.grid.cell_volume();
                    }
                }
                None => {
                    let rhs = terms.gain_mass[x] - terms.loss_mass[x] * field.masses[x];
                    sq += rhs * rhs;
                }
            }
        }
        Ok(sq.sqrt())
    }

    fn require_no_discrete(&self, net: &Network) -> Result<()> {
        if net.has_small_species() {
            return Err(SimError::config(
                "the density solver needs every species abundant; use the hybrid simulator \
                 for networks with discrete species",
            ));
        }
        Ok(())
    }
}

/// Discrete Laplacian with zero-flux (mirror) boundaries, divergence form.
pub fn laplacian(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let n = grid.cells_per_axis;
    let mut out = vec![0.0; values.len()];
    match grid.dim() {
        1 => {
            let inv = 1.0 / (grid.dx[0] * grid.dx[0]);
            for c in 0..n {
                let left = if c == 0 { values[0] } else { values[c - 1] };
                let right = if c + 1 == n { values[n - 1] } else { values[c + 1] };
                out[c] = (left - 2.0 * values[c] + right) * inv;
            }
        }
        2 => {
            let inv_x = 1.0 / (grid.dx[0] * grid.dx[0]);
            let inv_y = 1.0 / (grid.dx[1] * grid.dx[1]);
            for cy in 0..n {
                for cx in 0..n {
                    let c = cy * n + cx;
                    let l = if cx == 0 { values[c] } else { values[c - 1] };
                    let r = if cx + 1 == n { values[c] } else { values[c + 1] };
                    let d = if cy == 0 { values[c] } else { values[c - n] };
                    let u = if cy + 1 == n { values[c] } else { values[c + n] };
                    out[c] =
                        (l - 2.0 * values[c] + r) * inv_x + (d - 2.0 * values[c] + u) * inv_y;
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Conservative central advection `-div(b mu)` with zero boundary fluxes.
fn advection(grid: &Grid, values: &[f64], drift: &Point) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    if (0..grid.dim()).all(|i| drift[i] == 0.0) {
        return out;
    }
    let n = grid.cells_per_axis;
    match grid.dim() {
        1 => {
            let b = drift[0];
            let inv = 1.0 / grid.dx[0];
            for c in 0..n {
                let flux_r =
                    if c + 1 == n { 0.0 } else { b * 0.5 * (values[c] + values[c + 1]) };
                let flux_l = if c == 0 { 0.0 } else { b * 0.5 * (values[c - 1] + values[c]) };
                out[c] = (flux_l - flux_r) * inv;
            }
        }
        2 => {
            for axis in 0..2 {
                let b = drift[axis];
                if b == 0.0 {
                    continue;
                }
                let inv = 1.0 / grid.dx[axis];
                let stride = if axis == 0 { 1 } else { n };
                for cy in 0..n {
                    for cx in 0..n {
                        let c = cy * n + cx;
                        let coord = if axis == 0 { cx } else { cy };
                        let flux_r = if coord + 1 == n {
                            0.0
                        } else {
                            b * 0.5 * (values[c] + values[c + stride])
                        };
                        let flux_l = if coord == 0 {
                            0.0
                        } else {
                            b * 0.5 * (values[c - stride] + values[c])
                        };
                        out[c] += (flux_l - flux_r) * inv;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Backward-Euler diffusion solve `(I - alpha_dt L) v = v` in place; for two
/// dimensions the operator splits axis by axis (first-order, like the rest
/// of the scheme). Each tridiagonal solve conserves mass exactly.
fn implicit_diffusion(grid: &Grid, values: &mut [f64], alpha_dt: f64) -> Result<()> {
    if alpha_dt == 0.0 {
        return Ok(());
    }
    let n = grid.cells_per_axis;
    match grid.dim() {
        1 => {
            let alpha = alpha_dt / (grid.dx[0] * grid.dx[0]);
            thomas_neumann(values, alpha, n);
        }
        2 => {
            let ax = alpha_dt / (grid.dx[0] * grid.dx[0]);
            let ay = alpha_dt / (grid.dx[1] * grid.dx[1]);
            let mut row = vec![0.0; n];
            for cy in 0..n {
                row.copy_from_slice(&values[cy * n..(cy + 1) * n]);
                thomas_neumann(&mut row, ax, n);
                values[cy * n..(cy + 1) * n].copy_from_slice(&row);
            }
            let mut col = vec![0.0; n];
            for cx in 0..n {
                for cy in 0..n {
                    col[cy] = values[cy * n + cx];
                }
                thomas_neumann(&mut col, ay, n);
                for cy in 0..n {
                    values[cy * n + cx] = col[cy];
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Tridiagonal solve for `(I - alpha L) x = rhs` with zero-flux rows
/// (boundary rows have a single off-diagonal); rhs is overwritten.
fn thomas_neumann(rhs: &mut [f64], alpha: f64, n: usize) {
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let neighbors = if i == 0 || i + 1 == n { 1.0 } else { 2.0 };
        diag[i] = 1.0 + alpha * neighbors;
        upper[i] = -alpha;
    }
    for i in 1..n {
        let m = -alpha / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

#[cfg(test)]
mod tests;
