//! Kernel density estimation of the empirical measure on the solver grid,
//! for comparison against the density limit.
//!
//! Each particle deposits its weight through a compact smoothing kernel
//! renormalized over the cells inside the domain, so the deposit conserves
//! the weight exactly even against the boundary.

use crate::error::{Result, SimError};
use crate::geometry::{dist2, Point};
use crate::network::Network;
use crate::pide::{DensityField, Grid};
use crate::state::ParticleMeasure;

/// Default estimation bandwidth: `max(dx, N^(-1/(d+2)))`.
pub fn default_bandwidth(net: &Network, grid: &Grid) -> f64 {
    let dx = (0..grid.dim()).map(|i| grid.dx[i]).fold(0.0f64, f64::max);
    let rate = (net.scale as f64).powf(-1.0 / (net.domain.dim as f64 + 2.0));
    dx.max(rate)
}

fn epanechnikov_profile(d2: f64, b2: f64) -> f64 {
    if d2 >= b2 {
        0.0
    } else {
        1.0 - d2 / b2
    }
}

/// Deposit `weight` at `point` through the bandwidth kernel, renormalized
/// over the in-domain cells so the added mass is exactly `weight`.
fn deposit_smoothed(grid: &Grid, values: &mut [f64], point: &Point, weight: f64, bandwidth: f64) {
    let n = grid.cells_per_axis as i32;
    let b2 = bandwidth * bandwidth;
    let mut lo = [0i32; 2];
    let mut hi = [0i32; 2];
    for i in 0..grid.dim() {
        let l = ((point[i] - bandwidth - grid.domain.lo[i]) / grid.dx[i]).floor() as i32;
        let h = ((point[i] + bandwidth - grid.domain.lo[i]) / grid.dx[i]).floor() as i32;
        lo[i] = l.clamp(0, n - 1);
        hi[i] = h.clamp(0, n - 1);
    }
    let mut cells = Vec::new();
    let mut total = 0.0;
    let mut c = lo;
    loop {
        let coords = [c[0] as usize, c[1] as usize];
        let flat = grid.flat(&coords[..grid.dim()]);
        let v = epanechnikov_profile(dist2(&grid.center(flat), point, grid.dim()), b2);
        if v > 0.0 {
            cells.push((flat, v));
            total += v;
        }
        let mut axis = 0;
        loop {
            if axis == grid.dim() {
                let norm = total * grid.cell_volume();
                if norm > 0.0 {
                    for (flat, v) in cells {
                        values[flat] += weight * v / norm;
                    }
                }
                return;
            }
            c[axis] += 1;
            if c[axis] <= hi[axis] {
                break;
            }
            c[axis] = lo[axis];
            axis += 1;
        }
    }
}

/// Ensemble-averaged smoothed density of particle populations: diffusive
/// species are kernel-smoothed onto the grid, localized species aggregate
/// into their anchor scalars.
pub fn empirical_density(
    net: &Network,
    measures: &[ParticleMeasure],
    bandwidth: f64,
    cells: usize,
) -> Result<DensityField> {
    if measures.is_empty() {
        return Err(SimError::config("empirical density of an empty ensemble"));
    }
    let grid = Grid::new(&net.domain, cells)?;
    let dx = (0..grid.dim()).map(|i| grid.dx[i]).fold(0.0f64, f64::max);
    if bandwidth < dx {
        return Err(SimError::config(format!(
            "bandwidth {bandwidth} below the grid spacing {dx}"
        )));
    }
    let mut field = DensityField::zero(net, grid.clone());
    // Track every species here, including discrete ones (their anchor
    // scalars are count averages).
    for t in field.tracked.iter_mut() {
        *t = true;
    }
    let scale = 1.0 / measures.len() as f64;
    for m in measures {
        for x in 0..net.species.len() {
            let w = net.weight(x) * scale;
            match net.species[x].anchor() {
                Some(_) => {
                    field.masses[x] += w * m.count(x) as f64;
                }
                None => {
                    let values = field.cells[x].get_or_insert_with(|| vec![0.0; grid.n_cells()]);
                    for p in m.particles(x) {
                        deposit_smoothed(&grid, values, &p.pos, w, bandwidth);
                    }
                }
            }
        }
    }
    Ok(field)
}

/// Smoothing floor: the L1 distance between a reference field and its own
/// smoothed image under the same estimator. Convergence of the empirical
/// density is judged above this floor.
pub fn smoothing_floor(reference: &DensityField, bandwidth: f64) -> f64 {
    let grid = &reference.grid;
    let mut floor = 0.0;
    for x in 0..reference.cells.len() {
        if !reference.tracked[x] {
            continue;
        }
        if let Some(values) = &reference.cells[x] {
            let mut smoothed = vec![0.0; values.len()];
            for (flat, &v) in values.iter().enumerate() {
                if v != 0.0 {
                    deposit_smoothed(
                        grid,
                        &mut smoothed,
                        &grid.center(flat),
                        v * grid.cell_volume(),
                        bandwidth,
                    );
                }
            }
            floor += values
                .iter()
                .zip(&smoothed)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * grid.cell_volume();
        }
    }
    floor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_from;
    use crate::network::parse_config;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn single_particle_mass_conserved() {
        let cfg = parse_config(crate::bundled::PROTEIN_DIFFUSIVE).unwrap();
        let mut net = cfg.network.clone();
        net.scale = 1;
        let mut m = ParticleMeasure::new(net.species.len());
        // Interior and boundary-hugging particles both deposit exactly 1.
        m.insert(&net, 0, point_from(&[0.3])).unwrap();
        let field = empirical_density(&net, &[m.clone()], 0.11, 128).unwrap();
        assert!((field.species_mass(0) - 1.0).abs() < 1e-10);
        m.insert(&net, 0, point_from(&[-0.999])).unwrap();
        let field = empirical_density(&net, &[m], 0.11, 128).unwrap();
        assert!((field.species_mass(0) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn ensemble_of_identical_measures_matches_single() {
        let cfg = parse_config(crate::bundled::PROTEIN_DIFFUSIVE).unwrap();
        let net = cfg.network.clone();
        let mut m = ParticleMeasure::new(net.species.len());
        let mut rng = stream(83, 0);
        for _ in 0..40 {
            let pos = net.domain.sample_uniform(&mut rng);
            m.insert(&net, 1, pos).unwrap();
        }
        let single = empirical_density(&net, &[m.clone()], 0.1, 128).unwrap();
        let trio = empirical_density(&net, &[m.clone(), m.clone(), m], 0.1, 128).unwrap();
        assert!(single.l1_distance(&trio) < 1e-12);
    }

    #[test]
    fn sampled_density_recovers_truth() {
        // 1e4 unit-weight particles from a known density: L1 error < 0.05.
        let cfg = parse_config(crate::bundled::PROTEIN_DIFFUSIVE).unwrap();
        let mut net = cfg.network.clone();
        net.scale = 10_000;
        let mut rng = stream(83, 1);
        let mut m = ParticleMeasure::new(net.species.len());
        // Triangular density on [-1, 1]: f(y) = (1 - |y|).
        let n = 10_000;
        for _ in 0..n {
            let u: f64 = rng.gen();
            let y = if rng.gen::<bool>() { 1.0 - u.sqrt() } else { u.sqrt() - 1.0 };
            m.insert(&net, 0, point_from(&[y])).unwrap();
        }
        let bw = default_bandwidth(&net, &Grid::new(&net.domain, 128).unwrap());
        let field = empirical_density(&net, &[m], bw, 128).unwrap();
        let grid = &field.grid;
        let est = field.cells[0].as_ref().unwrap();
        let mut err = 0.0;
        for (flat, &v) in est.iter().enumerate() {
            let y = grid.center(flat)[0];
            err += (v - (1.0 - y.abs())).abs() * grid.cell_volume();
        }
        assert!(err < 0.05, "L1 error {err}");
    }

    #[test]
    fn floor_is_positive_for_peaked_fields() {
        let cfg = parse_config(crate::bundled::PROTEIN_DIFFUSIVE).unwrap();
        let net = cfg.network.clone();
        let grid = Grid::new(&net.domain, 128).unwrap();
        let mut field = DensityField::zero(&net, grid.clone());
        grid.deposit_hat(field.cells[0].as_mut().unwrap(), &point_from(&[0.0]), 1.0);
        let f1 = smoothing_floor(&field, 0.05);
        let f2 = smoothing_floor(&field, 0.2);
        assert!(f1 > 0.0 && f2 > f1, "floors {f1} {f2}");
    }
}
