//! Experiment orchestration: configuration-driven runs of the simulators
//! and solvers, convergence experiments, statistical diagnostics, and
//! result emission.

pub mod convergence;
pub mod empirical;
pub mod generator;
pub mod output;
pub mod qv;
pub mod sampling;
pub mod stationary;
pub mod stats;

use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Result, SimError};
use crate::exact_sim::SimState;
use crate::network::{Config, ExperimentSpec};
use crate::pdmp::{HybridState, Pdmp};
use crate::pide::{DensityField, Solver, SolverConfig};
use crate::rng::stream;
use crate::state::Observable;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub snapshot_every: Option<f64>,
}

fn expect_experiment<'a>(cfg: &'a Config, what: &str) -> Result<&'a ExperimentSpec> {
    cfg.experiment
        .as_ref()
        .ok_or_else(|| SimError::config(format!("config has no experiment block (need {what})")))
}

/// `simulate`: one exact trajectory, event log and particle snapshots.
pub fn cmd_simulate(cfg: &Config, opts: &RunOptions) -> Result<()> {
    let (t_end, snapshot_every) = match expect_experiment(cfg, "single_run_exact")? {
        ExperimentSpec::SingleRunExact { t_end, snapshot_every } => (*t_end, *snapshot_every),
        other => {
            return Err(SimError::config(format!(
                "experiment kind {other:?} does not match `simulate`"
            )))
        }
    };
    let net = &cfg.network;
    let mut rng = stream(opts.seed, 0);
    let m0 = sampling::sample_initial_measure(net, &cfg.initial, &mut rng)?;
    let mut sim = SimState::new(net, m0, net.default_micro_dt(), stream(opts.seed, 1))?;
    let cadence = opts.snapshot_every.or(snapshot_every);
    let mut events = Vec::new();
    let mut snapshot_idx = 0;
    let dir = opts.out_dir.clone();
    let snapshot = |sim: &SimState, idx: usize| -> Result<()> {
        if let Some(dir) = &dir {
            output::ensure_dir(dir)?;
            let file = std::fs::File::create(dir.join(format!("particles_{idx:05}.tsv")))?;
            sim.measure.write_snapshot(net, std::io::BufWriter::new(file))?;
        }
        Ok(())
    };
    snapshot(&sim, snapshot_idx)?;
    match cadence {
        Some(dt) if dt > 0.0 => {
            while sim.time < t_end - 1e-12 {
                let next = (sim.time + dt).min(t_end);
                events.extend(sim.advance(net, next)?);
                snapshot_idx += 1;
                snapshot(&sim, snapshot_idx)?;
            }
        }
        _ => {
            events.extend(sim.advance(net, t_end)?);
            snapshot_idx += 1;
            snapshot(&sim, snapshot_idx)?;
        }
    }
    if let Some(dir) = &opts.out_dir {
        output::ensure_dir(dir)?;
        let file = std::fs::File::create(dir.join("events.tsv"))?;
        output::write_event_log(std::io::BufWriter::new(file), net, &events)?;
    }
    println!("simulate: t = {:.6}, {} events", sim.time, events.len());
    for (x, s) in net.species.iter().enumerate() {
        println!("  {}: {} particles", s.name, sim.measure.count(x));
    }
    Ok(())
}

/// `pide`: direct density solve with snapshot emission.
pub fn cmd_pide(cfg: &Config, opts: &RunOptions) -> Result<()> {
    let (t_end, snapshot_every) = match expect_experiment(cfg, "single_run_pide")? {
        ExperimentSpec::SingleRunPide { t_end, snapshot_every } => (*t_end, *snapshot_every),
        other => {
            return Err(SimError::config(format!(
                "experiment kind {other:?} does not match `pide`"
            )))
        }
    };
    let net = &cfg.network;
    let solver = Solver::new(net, SolverConfig::from_settings(&cfg.solver)?)?;
    let field0 = DensityField::from_initial(net, &cfg.initial, solver.grid.clone())?;
    let cadence = opts.snapshot_every.or(snapshot_every).unwrap_or(t_end);
    let mut manifest = output::Manifest::new(&solver.grid);
    let mut next_snapshot = cadence;
    let mut index = 0;
    if let Some(dir) = &opts.out_dir {
        let entry = output::write_field_snapshot(dir, net, &field0, index)?;
        manifest.snapshots.push(entry);
    }
    let dir = opts.out_dir.clone();
    let mut entries = Vec::new();
    let mut cb = |f: &DensityField| {
        if f.time + 1e-12 >= next_snapshot {
            next_snapshot += cadence;
            if let Some(dir) = &dir {
                index += 1;
                if let Ok(entry) = output::write_field_snapshot(dir, net, f, index) {
                    entries.push(entry);
                }
            }
        }
    };
    let field = solver.solve(net, &field0, t_end, Some(&mut cb))?;
    manifest.snapshots.extend(entries);
    if let Some(dir) = &opts.out_dir {
        manifest.write(dir)?;
    }
    println!("pide: t = {:.6}, |mu|_1 = {:.6}", field.time, field.l1_norm());
    for (x, s) in net.species.iter().enumerate() {
        if field.tracked[x] {
            println!("  {}: mass {:.6}", s.name, field.species_mass(x));
        }
    }
    Ok(())
}

/// `pdmp`: one hybrid trajectory (jump log plus field snapshots), or
/// stationary count sampling when the config asks for it.
pub fn cmd_pdmp(cfg: &Config, opts: &RunOptions) -> Result<()> {
    let (t_end, snapshot_every) = match expect_experiment(cfg, "single_run_pdmp")? {
        ExperimentSpec::SingleRunPdmp { t_end, snapshot_every } => (*t_end, *snapshot_every),
        ExperimentSpec::StationaryCheck { burn_in, samples, thin } => {
            return cmd_pdmp_stationary(cfg, opts, *burn_in, *samples, *thin)
        }
        other => {
            return Err(SimError::config(format!(
                "experiment kind {other:?} does not match `pdmp`"
            )))
        }
    };
    let net = &cfg.network;
    let pdmp = Pdmp::new(net, SolverConfig::from_settings(&cfg.solver)?)?;
    let continuous = DensityField::from_initial(net, &cfg.initial, pdmp.solver.grid.clone())?;
    let counts = sampling::initial_counts(net, &cfg.initial)?;
    let mut state = HybridState::new(continuous, counts);
    let mut rng = stream(opts.seed, 0);
    let cadence = opts.snapshot_every.or(snapshot_every).unwrap_or(t_end);
    let mut manifest = output::Manifest::new(&pdmp.solver.grid);
    let mut next_snapshot = cadence;
    let mut index = 0;
    let dir = opts.out_dir.clone();
    let mut entries = Vec::new();
    let mut cb = |s: &HybridState| {
        if s.time + 1e-12 >= next_snapshot {
            next_snapshot += cadence;
            if let Some(dir) = &dir {
                index += 1;
                if let Ok(entry) = output::write_field_snapshot(dir, net, &s.continuous, index) {
                    entries.push(entry);
                }
            }
        }
    };
    let jumps = pdmp.run(net, &mut state, t_end, &mut rng, Some(&mut cb))?;
    manifest.snapshots.extend(entries);
    if let Some(dir) = &opts.out_dir {
        output::ensure_dir(dir)?;
        manifest.write(dir)?;
        let mut out = std::fs::File::create(dir.join("jumps.tsv"))?;
        use std::io::Write;
        writeln!(out, "t\treaction\tdeltas")?;
        for j in &jumps {
            let deltas: Vec<String> = j
                .deltas
                .iter()
                .map(|&(x, d)| format!("{}{:+}", net.species[x].name, d))
                .collect();
            writeln!(
                out,
                "{:.12e}\t{}\t{}",
                j.time,
                net.reactions[j.reaction].name,
                deltas.join(";")
            )?;
        }
    }
    println!("pdmp: t = {:.6}, {} jumps", state.time, jumps.len());
    for x in net.small_species() {
        println!("  {}: count {}", net.species[x].name, state.discrete[x]);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct StationaryReport {
    species: String,
    samples: usize,
    mean: f64,
    variance: f64,
    histogram: Vec<u64>,
    /// Goodness of fit against a Poisson law with the sample mean.
    poisson_statistic: f64,
    poisson_critical: f64,
    poisson_pass: bool,
}

fn cmd_pdmp_stationary(
    cfg: &Config,
    opts: &RunOptions,
    burn_in: f64,
    samples: usize,
    thin: f64,
) -> Result<()> {
    let net = &cfg.network;
    let species = net
        .small_species()
        .next()
        .ok_or_else(|| SimError::config("stationary check needs a discrete species"))?;
    let chains = 16.min(samples.max(1));
    let counts =
        stationary::pdmp_count_samples(cfg, species, burn_in, samples, thin, chains, opts.seed)?;
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mean = stats::mean(&xs);
    let hist = stationary::histogram(&counts);
    let chi = stats::chi_square_gof_fitted(&hist, |k| stats::poisson_pmf(mean, k), 0.01, 1)?;
    let report = StationaryReport {
        species: net.species[species].name.clone(),
        samples: counts.len(),
        mean,
        variance: stats::variance(&xs),
        histogram: hist,
        poisson_statistic: chi.statistic,
        poisson_critical: chi.critical,
        poisson_pass: chi.pass,
    };
    if let Some(dir) = &opts.out_dir {
        output::write_report(&dir.join("stationary.toml"), &report)?;
    }
    println!(
        "pdmp stationary: {} samples of {}: mean {:.4}, variance {:.4}, \
         Poisson fit chi2 {:.2} vs {:.2} ({})",
        report.samples,
        report.species,
        report.mean,
        report.variance,
        report.poisson_statistic,
        report.poisson_critical,
        if report.poisson_pass { "pass" } else { "FAIL" }
    );
    Ok(())
}

/// `converge`: particle-to-density convergence experiment.
pub fn cmd_converge(cfg: &Config, opts: &RunOptions) -> Result<()> {
    let (n_values, ensemble, t_end, bandwidth) = match expect_experiment(cfg, "convergence_in_n")? {
        ExperimentSpec::ConvergenceInN { n_values, ensemble, t_end, bandwidth } => {
            (n_values.clone(), *ensemble, *t_end, *bandwidth)
        }
        other => {
            return Err(SimError::config(format!(
                "experiment kind {other:?} does not match `converge`"
            )))
        }
    };
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SimError::config("convergence n_values must be strictly increasing"));
    }
    if ensemble == 0 {
        return Err(SimError::config("ensemble size must be at least 1"));
    }
    let (report, reference, estimates) =
        convergence::run_convergence_in_n(cfg, &n_values, ensemble, t_end, bandwidth, opts.seed)?;
    if let Some(dir) = &opts.out_dir {
        output::write_report(&dir.join("convergence.toml"), &report)?;
        let refdir = dir.join("reference");
        let mut manifest = output::Manifest::new(&reference.grid);
        let entry = output::write_field_snapshot(&refdir, &cfg.network, &reference, 0)?;
        manifest.snapshots.push(entry);
        manifest.write(&refdir)?;
        for (e, est) in report.entries.iter().zip(&estimates) {
            let ndir = dir.join(format!("n_{:05}", e.scale));
            let mut manifest = output::Manifest::new(&est.grid);
            let entry = output::write_field_snapshot(&ndir, &cfg.network, est, 0)?;
            manifest.snapshots.push(entry);
            manifest.write(&ndir)?;
        }
    }
    for e in &report.entries {
        println!(
            "N = {:5}: L1 = {:.5}  (floor {:.5}, bandwidth {:.4}, {:.1}s)",
            e.scale, e.l1, e.smoothing_floor, e.bandwidth, e.runtime_seconds
        );
    }
    println!("fitted L1 slope vs N: {:.3}", report.slope);
    Ok(())
}

/// `check-generator`: drift consistency of the assembled operator.
pub fn cmd_check_generator(cfg: &Config, opts: &RunOptions) -> Result<()> {
    let (delta, replicates) = match expect_experiment(cfg, "generator_check")? {
        ExperimentSpec::GeneratorCheck { delta, replicates } => (*delta, *replicates),
        other => {
            return Err(SimError::config(format!(
                "experiment kind {other:?} does not match `check-generator`"
            )))
        }
    };
    let net = &cfg.network;
    let mut rng = stream(opts.seed, 0);
    let m = sampling::sample_initial_measure(net, &cfg.initial, &mut rng)?;
    let observables = generator::default_observables(net);
    let report = generator::generator_check(net, &m, &observables, delta, replicates, opts.seed)?;
    for e in &report.entries {
        println!(
            "{:<16} mc {:+.5e} (se {:.2e})  assembled {:+.5e}  z = {:+.2}",
            e.label, e.mc_drift, e.mc_se, e.assembled, e.z
        );
    }
    println!(
        "generator check: max |z| = {:.2} over {} observables ({})",
        report.max_abs_z(),
        report.entries.len(),
        if report.pass() { "pass" } else { "FAIL" }
    );
    if let Some(dir) = &opts.out_dir {
        #[derive(Serialize)]
        struct Entry<'a> {
            label: &'a str,
            mc_drift: f64,
            mc_se: f64,
            assembled: f64,
            z: f64,
        }
        #[derive(Serialize)]
        struct Report<'a> {
            delta: f64,
            replicates: usize,
            pass: bool,
            entries: Vec<Entry<'a>>,
        }
        let r = Report {
            delta,
            replicates,
            pass: report.pass(),
            entries: report
                .entries
                .iter()
                .map(|e| Entry {
                    label: &e.label,
                    mc_drift: e.mc_drift,
                    mc_se: e.mc_se,
                    assembled: e.assembled,
                    z: e.z,
                })
                .collect(),
        };
        output::write_report(&dir.join("generator.toml"), &r)?;
    }
    if !report.pass() {
        return Err(SimError::numeric(format!(
            "generator check failed: max |z| = {:.2}",
            report.max_abs_z()
        )));
    }
    Ok(())
}

/// `check-qv`: martingale fluctuation sizes against the predicted
/// quadratic variation, optionally across abundance scales.
pub fn cmd_check_qv(cfg: &Config, opts: &RunOptions) -> Result<()> {
    let (t_end, replicates, scales) = match expect_experiment(cfg, "qv_check")? {
        ExperimentSpec::QvCheck { t_end, replicates, scales } => {
            (*t_end, *replicates, scales.clone())
        }
        other => {
            return Err(SimError::config(format!(
                "experiment kind {other:?} does not match `check-qv`"
            )))
        }
    };
    let scales = if scales.is_empty() { vec![cfg.network.scale] } else { scales };
    let mut reports = Vec::new();
    for (i, &n) in scales.iter().enumerate() {
        let net = sampling::with_scale(&cfg.network, n);
        let obs = Observable::species_indicator(0, &net.domain);
        let initial = &cfg.initial;
        let report = qv::qv_check(
            &net,
            |rng: &mut _| sampling::sample_initial_measure(&net, initial, rng),
            &obs,
            t_end,
            replicates,
            net.default_micro_dt(),
            opts.seed ^ 0x51ab ^ ((i as u64) << 16),
        )?;
        println!(
            "N = {:5}: Var(Z_T) = {:.5e}, E[QV] = {:.5e}, ratio = {:.3}",
            n, report.var_z, report.mean_qv, report.ratio
        );
        reports.push((n, report));
    }
    if reports.len() >= 2 {
        let qv_ratio = reports[0].1.mean_qv / reports[1].1.mean_qv;
        let n_ratio = reports[1].0 as f64 / reports[0].0 as f64;
        println!("predicted QV ratio across scales: {qv_ratio:.3} (expected ~{n_ratio:.1})");
    }
    if let Some(dir) = &opts.out_dir {
        #[derive(Serialize)]
        struct Entry {
            scale: u32,
            paths: usize,
            var_z: f64,
            mean_qv: f64,
            ratio: f64,
        }
        let entries: Vec<Entry> = reports
            .iter()
            .map(|(n, r)| Entry {
                scale: *n,
                paths: r.paths,
                var_z: r.var_z,
                mean_qv: r.mean_qv,
                ratio: r.ratio,
            })
            .collect();
        #[derive(Serialize)]
        struct Report {
            t_end: f64,
            entries: Vec<Entry>,
        }
        output::write_report(&dir.join("qv.toml"), &Report { t_end, entries })?;
    }
    Ok(())
}

/// `steady-state`: march the density system to its fixed point.
pub fn cmd_steady_state(cfg: &Config, opts: &RunOptions) -> Result<()> {
    let tol = match cfg.experiment.as_ref() {
        Some(ExperimentSpec::SteadyState { tol }) => *tol,
        None => 1e-8,
        Some(other) => {
            return Err(SimError::config(format!(
                "experiment kind {other:?} does not match `steady-state`"
            )))
        }
    };
    let net = &cfg.network;
    let solver = Solver::new(net, SolverConfig::from_settings(&cfg.solver)?)?;
    let field0 = DensityField::from_initial(net, &cfg.initial, solver.grid.clone())?;
    let (pi, residual) = solver.steady_state(net, &field0, tol, 10_000_000)?;
    println!("steady state reached: residual {residual:.3e}");
    for (x, s) in net.species.iter().enumerate() {
        if pi.tracked[x] {
            println!("  {}: mass {:.6}", s.name, pi.species_mass(x));
        }
    }
    if let Some(dir) = &opts.out_dir {
        let mut manifest = output::Manifest::new(&solver.grid);
        let entry = output::write_field_snapshot(dir, net, &pi, 0)?;
        manifest.snapshots.push(entry);
        manifest.write(dir)?;
    }
    Ok(())
}
