use super::*;
use crate::geometry::{point_from, KernelFamily};
use crate::network::{RateFactor, ReactionLocality};
use crate::state::tests::{build_net, diffusive, localized, ReactionDef};

fn decay_net(c: f64) -> crate::network::Network {
    build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![diffusive("a", 0.01)],
        vec![ReactionDef {
            name: "decay",
            sources: vec![0],
            consume: vec![true],
            products: vec![],
            locality: ReactionLocality::NonLocalized,
            rate: RateFactor::constant(c),
        }],
    )
}

fn uniform_field(net: &crate::network::Network, cells: usize, mass: f64) -> DensityField {
    let grid = Grid::new(&net.domain, cells).unwrap();
    let mut f = DensityField::zero(net, grid);
    if let Some(v) = f.cells[0].as_mut() {
        v.fill(mass / net.domain.volume());
    } else {
        f.masses[0] = mass;
    }
    f
}

#[test]
fn no_reactions_no_terms() {
    let net = build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![diffusive("a", 0.01)],
        vec![],
    );
    let solver = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-3, 64)).unwrap();
    let field = uniform_field(&net, 64, 1.0);
    let terms = solver.reaction_terms(&net, &field, None).unwrap();
    assert!(terms.gain_cells[0].as_ref().unwrap().iter().all(|&v| v == 0.0));
    assert!(terms.loss_cells[0].as_ref().unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn interior_decay_loss_is_the_factor() {
    // For a constant-factor unary decay, the loss coefficient at a cell
    // whose kernel ball stays inside the domain is exactly the factor (the
    // discrete kernel has unit mass).
    let h3 = 0.8;
    let net = decay_net(h3);
    let solver = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-3, 64)).unwrap();
    let field = uniform_field(&net, 64, 1.3);
    let terms = solver.reaction_terms(&net, &field, None).unwrap();
    let loss = terms.loss_cells[0].as_ref().unwrap();
    let center = solver.grid.n_cells() / 2;
    assert!((loss[center] - h3).abs() < 1e-12, "{}", loss[center]);
    // Near the boundary the truncated kernel weakens the loss.
    assert!(loss[0] < h3 * 0.75);
}

#[test]
fn catalytic_gain_is_kernel_smear() {
    // s -> s + p (catalytic): the gain density of p is h2 * (Gamma * mu_s).
    let h2 = 1.4;
    let net = build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![diffusive("s", 0.01), diffusive("p", 0.01)],
        vec![ReactionDef {
            name: "convert",
            sources: vec![0],
            consume: vec![false],
            products: vec![0, 1],
            locality: ReactionLocality::NonLocalized,
            rate: RateFactor::constant(h2),
        }],
    );
    let solver = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-3, 64)).unwrap();
    let grid = Grid::new(&net.domain, 64).unwrap();
    let mut field = DensityField::zero(&net, grid.clone());
    let mu_s = field.cells[0].as_mut().unwrap();
    grid.deposit_hat(mu_s, &point_from(&[0.3]), 1.0);
    let mu_s = field.cells[0].as_ref().unwrap().clone();

    let terms = solver.reaction_terms(&net, &field, None).unwrap();
    let stencil = Stencil::for_kernel(&grid, &net.kernel).unwrap();
    let mut expect = vec![0.0; grid.n_cells()];
    stencil.convolve(&grid, &mu_s, &mut expect);
    let gain = terms.gain_cells[1].as_ref().unwrap();
    for c in 0..grid.n_cells() {
        assert!((gain[c] - h2 * expect[c]).abs() < 1e-12);
    }
    // The catalyst itself sees no loss and no gain.
    assert!(terms.loss_cells[0].as_ref().unwrap().iter().all(|&v| v == 0.0));
    assert!(terms.gain_cells[0].as_ref().unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn diffusion_preserves_uniform_and_mass() {
    let net = build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![diffusive("a", 0.02)],
        vec![],
    );
    for scheme in [Scheme::ExplicitEuler, Scheme::Imex] {
        let solver = Solver::new(&net, SolverConfig::new(scheme, 1e-4, 64)).unwrap();
        // Uniform field is a fixed point of pure diffusion.
        let field = uniform_field(&net, 64, 1.0);
        let next = solver.step(&net, &field, &field.clone(), 1e-4, None).unwrap();
        for (a, b) in field.cells[0].as_ref().unwrap().iter().zip(next.cells[0].as_ref().unwrap())
        {
            assert!((a - b).abs() < 1e-12);
        }
        // Any field: the diffusion operator alone conserves total mass.
        let grid = Grid::new(&net.domain, 64).unwrap();
        let mut field = DensityField::zero(&net, grid.clone());
        let values = field.cells[0].as_mut().unwrap();
        for (c, v) in values.iter_mut().enumerate() {
            *v = 0.3 + (c as f64 * 0.37).sin().abs();
        }
        let mass0 = field.species_mass(0);
        let mut f = field.clone();
        for _ in 0..20 {
            f = solver.diffusion_step(&net, &f, 1e-4).unwrap();
        }
        let drift = (f.species_mass(0) - mass0).abs();
        assert!(drift <= 20.0 * 1e-12, "mass drift {drift} under {scheme:?}");
    }
}

/// Grid self-convergence of pure diffusion against Richardson refinement:
/// a smooth interior bump, dt scaled with dx^2, order at least 1.9.
#[test]
fn diffusion_self_convergence_order() {
    let net = build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![diffusive("a", 0.01)],
        vec![],
    );
    let t_end = 0.1;
    let solve_on = |cells: usize, steps: usize| -> Vec<f64> {
        let grid = Grid::new(&net.domain, cells).unwrap();
        let mut field = DensityField::zero(&net, grid.clone());
        fill_profile(
            &grid,
            field.cells[0].as_mut().unwrap(),
            &ProfileSpec::Bump { center: vec![0.2], width: 0.4, mass: 1.0 },
        )
        .unwrap();
        let cfg = SolverConfig::new(Scheme::ExplicitEuler, t_end / steps as f64, cells);
        let solver = Solver::new(&net, cfg).unwrap();
        let out = solver.solve(&net, &field, t_end, None).unwrap();
        out.cells[0].as_ref().unwrap().clone()
    };
    let coarse = solve_on(32, 25);
    let mid = solve_on(64, 100);
    let fine = solve_on(128, 400);
    // Average fine cells pairwise down to the coarser grid.
    let coarsen = |v: &[f64]| -> Vec<f64> {
        v.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    };
    let mid_on_coarse = coarsen(&mid);
    let fine_on_mid = coarsen(&fine);
    let err_coarse: f64 = coarse
        .iter()
        .zip(&mid_on_coarse)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * (2.0 / 32.0);
    let err_mid: f64 = mid
        .iter()
        .zip(&fine_on_mid)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * (2.0 / 64.0);
    let order = (err_coarse / err_mid).log2();
    assert!(order >= 1.9, "observed order {order} ({err_coarse:.3e} vs {err_mid:.3e})");
}

/// A localized species with a localized decay reaction at its anchor decays
/// like the scalar ODE mu' = -c mu; forward Euler at dt = 1e-4 over t = 1
/// tracks the exponential within 1e-6 for c = 0.1.
#[test]
fn scalar_decay_matches_ode() {
    let anchor = point_from(&[0.0]);
    let c = 0.1;
    let net = build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![localized("s", anchor, false)],
        vec![ReactionDef {
            name: "decay",
            sources: vec![0],
            consume: vec![true],
            products: vec![],
            locality: ReactionLocality::Localized { location: anchor },
            // Divide out the kernel self-weight so the decay rate is c.
            rate: RateFactor::constant(c / 3.75),
        }],
    );
    assert!((net.kernel.sup() - 3.75).abs() < 1e-12);
    let solver = Solver::new(&net, SolverConfig::new(Scheme::ExplicitEuler, 1e-4, 64)).unwrap();
    let grid = Grid::new(&net.domain, 64).unwrap();
    let mut field = DensityField::zero(&net, grid);
    field.masses[0] = 1.0;
    let out = solver.solve(&net, &field, 1.0, None).unwrap();
    let exact = (-c * 1.0f64).exp();
    assert!(
        (out.masses[0] - exact).abs() < 1e-6,
        "{} vs {exact}",
        out.masses[0]
    );
}

#[test]
fn source_grows_linearly() {
    let anchor = point_from(&[0.0]);
    let c = 0.7;
    let net = build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![diffusive("a", 0.01)],
        vec![ReactionDef {
            name: "src",
            sources: vec![],
            consume: vec![],
            products: vec![0],
            locality: ReactionLocality::Localized { location: anchor },
            rate: RateFactor { scale_exponent: 1, ..RateFactor::constant(c) },
        }],
    );
    let solver = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-3, 64)).unwrap();
    let field = uniform_field(&net, 64, 0.0);
    let out = solver.solve(&net, &field, 2.0, None).unwrap();
    assert!((out.species_mass(0) - c * 2.0).abs() < 1e-9);
}

#[test]
fn picard_trivial_cases() {
    // Pure decay has mu-independent coefficients: the first sweep already
    // lands on the fixed point, so sweep 2 changes nothing.
    let net = decay_net(1.0);
    let solver = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-3, 64)).unwrap();
    let field = uniform_field(&net, 64, 1.0);
    let (_, gaps) = solver.picard_solve(&net, &field, 0.5, 3).unwrap();
    assert!(gaps[0] > 0.0);
    assert!(gaps[1] < 1e-13, "second sweep should be a no-op, gap {}", gaps[1]);

    // Zero sweeps return the constant-in-time initial trajectory.
    let (traj, gaps) = solver.picard_solve(&net, &field, 0.5, 0).unwrap();
    assert!(gaps.is_empty());
    assert!(traj.iter().all(|f| f.l1_distance(&field) == 0.0));
    assert!((traj.last().unwrap().time - 0.5).abs() < 1e-12);
}

#[test]
fn steady_state_cases() {
    // Decay only: the zero field.
    let net = decay_net(1.0);
    let solver = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-2, 64)).unwrap();
    let field = uniform_field(&net, 64, 1.0);
    let (pi, residual) = solver.steady_state(&net, &field, 1e-10, 200_000).unwrap();
    assert!(pi.species_mass(0) < 1e-6);
    assert!(residual < 1e-6);

    // Constant source against linear decay balances at c_src / c_decay for
    // a localized species (everything at one anchor).
    let anchor = point_from(&[0.0]);
    let gamma0 = 3.75;
    let net = build_net(
        &[[-1.0, 1.0]],
        0.2,
        KernelFamily::Epanechnikov,
        1,
        vec![localized("s", anchor, false)],
        vec![
            ReactionDef {
                name: "src",
                sources: vec![],
                consume: vec![],
                products: vec![0],
                locality: ReactionLocality::Localized { location: anchor },
                rate: RateFactor { scale_exponent: 1, ..RateFactor::constant(0.6) },
            },
            ReactionDef {
                name: "decay",
                sources: vec![0],
                consume: vec![true],
                products: vec![],
                locality: ReactionLocality::Localized { location: anchor },
                rate: RateFactor::constant(0.3 / gamma0),
            },
        ],
    );
    let solver = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-2, 64)).unwrap();
    let grid = Grid::new(&net.domain, 64).unwrap();
    let field = DensityField::zero(&net, grid);
    let (pi, residual) = solver.steady_state(&net, &field, 1e-11, 500_000).unwrap();
    assert!((pi.masses[0] - 2.0).abs() < 1e-6, "{}", pi.masses[0]);
    assert!(residual < 1e-8);
}

#[test]
fn unbalanced_scaling_rejected() {
    let mut net = decay_net(1.0);
    net.reactions[0].rate.scale_exponent = 1;
    let err = Solver::new(&net, SolverConfig::new(Scheme::Imex, 1e-3, 64)).unwrap_err();
    assert!(err.to_string().contains("balanced"), "{err}");
}

#[test]
fn cfl_violation_rejected() {
    let net = decay_net(1.0);
    // dx = 2/64, dx^2 ~ 9.8e-4; with sigma2 = 0.01 the bound is ~4.4e-2;
    // a dt of 1.0 clearly violates it.
    let err = Solver::new(&net, SolverConfig::new(Scheme::ExplicitEuler, 1.0, 64)).unwrap_err();
    assert!(err.to_string().contains("CFL"), "{err}");
}

/// Picard and the direct solve agree on every bundled density network
/// (full-resolution agreement is in the acceptance suite).
#[test]
fn picard_matches_direct_on_bundled_networks() {
    for text in [
        crate::bundled::PROTEIN_DIFFUSIVE,
        crate::bundled::PROTEIN_DIFFUSIVE_HILL,
    ] {
        let cfg = crate::network::parse_config(text).unwrap();
        let net = &cfg.network;
        let solver = Solver::new(net, SolverConfig::new(Scheme::Imex, 2e-3, 64)).unwrap();
        let grid = Grid::new(&net.domain, 64).unwrap();
        let field0 = DensityField::from_initial(net, &cfg.initial, grid).unwrap();
        let mut direct = vec![field0.clone()];
        let mut cb = |f: &DensityField| direct.push(f.clone());
        solver.solve(net, &field0, 0.5, Some(&mut cb)).unwrap();
        let (picard, gaps) = solver.picard_solve(net, &field0, 0.5, 20).unwrap();
        let sup_gap = picard
            .iter()
            .zip(&direct)
            .map(|(a, b)| a.l1_distance(b))
            .fold(0.0f64, f64::max);
        assert!(sup_gap < 1e-3, "sup gap {sup_gap}; gaps {gaps:?}");
    }
}

/// Discrete mass balance of the explicit scheme: the change of the total
/// mass over one step equals the integrated gains minus losses exactly
/// (diffusion and advection are conservative).
#[test]
fn explicit_step_mass_balance() {
    let cfg = crate::network::parse_config(crate::bundled::PROTEIN_DIFFUSIVE).unwrap();
    let net = &cfg.network;
    let solver = Solver::new(net, SolverConfig::new(Scheme::ExplicitEuler, 1e-4, 128)).unwrap();
    let grid = Grid::new(&net.domain, 128).unwrap();
    let field0 = DensityField::from_initial(net, &cfg.initial, grid).unwrap();
    // March a little so every species carries mass.
    let field = solver.solve(net, &field0, 0.2, None).unwrap();

    let terms = solver.reaction_terms(net, &field, None).unwrap();
    let mut flux = 0.0;
    for x in 0..net.species.len() {
        match &field.cells[x] {
            Some(mu) => {
                let gain = terms.gain_cells[x].as_ref().unwrap();
                let loss = terms.loss_cells[x].as_ref().unwrap();
                for c in 0..mu.len() {
                    flux += (gain[c] - loss[c] * mu[c]) * solver.grid.cell_volume();
                }
            }
            None => flux += terms.gain_mass[x] - terms.loss_mass[x] * field.masses[x],
        }
    }
    let dt = 1e-4;
    let next = solver.step(net, &field, &field.clone(), dt, None).unwrap();
    let mass0: f64 = (0..net.species.len()).map(|x| field.species_mass(x)).sum();
    let mass1: f64 = (0..net.species.len()).map(|x| next.species_mass(x)).sum();
    let change = (mass1 - mass0) / dt;
    assert!(
        (change - flux).abs() < 1e-9 * flux.abs().max(1.0),
        "mass change rate {change} vs net flux {flux}"
    );
}

/// The bundled diffusive network stays nonnegative with bounded total mass
/// over [0, 1].
#[test]
fn bundled_network_stays_nonnegative_and_bounded() {
    let cfg = crate::network::parse_config(crate::bundled::PROTEIN_DIFFUSIVE).unwrap();
    let net = &cfg.network;
    let solver = Solver::new(net, SolverConfig::new(Scheme::Imex, 1e-3, 64)).unwrap();
    let grid = Grid::new(&net.domain, 64).unwrap();
    let field0 = DensityField::from_initial(net, &cfg.initial, grid).unwrap();
    let mut max_norm = 0.0f64;
    let mut cb = |f: &DensityField| {
        max_norm = max_norm.max(f.l1_norm());
    };
    let out = solver.solve(net, &field0, 1.0, Some(&mut cb)).unwrap();
    assert!(out.negativity_defect == 0.0, "defect {}", out.negativity_defect);
    for v in out.cells.iter().flatten().flat_map(|c| c.iter()) {
        assert!(*v >= 0.0);
    }
    assert!(max_norm < 5.0, "mass blew up: {max_norm}");
}
