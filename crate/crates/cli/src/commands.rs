//! Subcommands. Each one returns its output files in memory, so nothing
//! touches the output directory until every computation has succeeded.

use sgrd_core::experiments::{
    convergence_study, gdm_diagnostics, wave_dynamics, write_diagnostics_csv, ConvergenceConfig,
    MeshSpec, NoiseSpec, WaveConfig,
};
use sgrd_core::gdisc::{HmmOptions, TimeGrid};
use sgrd_core::mesh::write_mesh;
use sgrd_core::par::Execution;
use sgrd_core::solver::{write_snapshot_csv, SchemeConfig, Stepper};
use sgrd_core::stochastic::{sample_path, write_paths_csv, NoiseModel};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct Output {
    pub path: String,
    pub bytes: Vec<u8>,
}

fn csv<F>(path: String, f: F) -> Result<Output, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> sgrd_core::Result<()>,
{
    let mut bytes = Vec::new();
    f(&mut bytes)?;
    Ok(Output { path, bytes })
}

fn mesh_spec(cfg: &RunConfig) -> MeshSpec {
    MeshSpec {
        rect: cfg.domain,
        family: cfg.family,
    }
}

fn noise_spec(cfg: &RunConfig) -> Result<NoiseSpec, CliError> {
    Ok(NoiseSpec {
        model: NoiseModel::new(cfg.noise_kind, cfg.rho)?,
        modes: cfg.modes,
    })
}

fn hmm(cfg: &RunConfig) -> HmmOptions {
    HmmOptions {
        stabilization: cfg.stabilization,
    }
}

pub fn generate_mesh(cfg: &RunConfig) -> Result<Vec<Output>, CliError> {
    let spec = mesh_spec(cfg);
    cfg.levels
        .iter()
        .map(|&n| {
            let mesh = spec.build(n)?;
            csv(format!("mesh_n{n}.txt"), |w| write_mesh(&mesh, w))
        })
        .collect()
}

pub fn diagnose(cfg: &RunConfig) -> Result<Vec<Output>, CliError> {
    let rows = gdm_diagnostics(&mesh_spec(cfg), &cfg.levels, hmm(cfg))?;
    for r in &rows {
        println!(
            "n={} h={:.6} consistency={:.6e} conformity={:.6e} dual_norm={:.6e}",
            r.n, r.h, r.consistency, r.conformity, r.dual_norm
        );
    }
    Ok(vec![csv("diagnostics.csv".into(), |w| {
        write_diagnostics_csv(&rows, w)
    })?])
}

pub fn converge(cfg: &RunConfig, exec: Execution) -> Result<Vec<Output>, CliError> {
    let study = ConvergenceConfig {
        mesh: mesh_spec(cfg),
        levels: cfg.levels.clone(),
        dts: (0..cfg.levels.len()).map(|i| cfg.dt(i)).collect(),
        final_time: cfg.final_time,
        c: cfg.c,
        noise: noise_spec(cfg)?,
        realizations: cfg.realizations,
        first_realization: cfg.realization,
        seed: cfg.seed,
        treatment: cfg.treatment,
        tolerance: cfg.tolerance,
        hmm: hmm(cfg),
    };
    let report = convergence_study(&study, exec)?;
    if report.failures > 0 {
        eprintln!(
            "warning: {} of {} realizations failed and were excluded",
            report.failures, cfg.realizations
        );
    }
    for r in &report.rows {
        let rate = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        println!(
            "level={} h={:.6} dt={} err_v={:.6e} rate_v={} err_grad={:.6e} rate_grad={}",
            r.level,
            r.h,
            r.dt,
            r.err_v,
            rate(r.rate_v),
            r.err_grad,
            rate(r.rate_grad)
        );
    }
    Ok(vec![csv("convergence.csv".into(), |w| {
        report.write_csv(w)
    })?])
}

pub fn wave(cfg: &RunConfig, exec: Execution) -> Result<Vec<Output>, CliError> {
    let study = WaveConfig {
        mesh: mesh_spec(cfg),
        n: cfg.finest_level(),
        dt: cfg.dt_of_finest(),
        final_time: cfg.final_time,
        c: cfg.c,
        kind: cfg.noise_kind,
        rhos: cfg.wave_rhos.clone(),
        modes: cfg.modes,
        snapshot_times: cfg.snapshot_times.clone(),
        tracking_lag: cfg.tracking_lag,
        seed: cfg.seed,
        realization: cfg.realization,
        treatment: cfg.treatment,
        tolerance: cfg.tolerance,
        hmm: hmm(cfg),
    };
    let report = wave_dynamics(&study, exec)?;
    let grid = TimeGrid::uniform(cfg.final_time, study.dt)?;
    let gd = study.mesh.discretise(study.n, grid, study.hmm)?;
    let mut out = vec![csv("wave.csv".into(), |w| report.write_csv(w))?];
    for row in &report.rows {
        println!(
            "rho={} t={} amplitude={:.6} fronts={}",
            row.rho,
            row.time,
            row.amplitude,
            row.front_count()
        );
        out.push(csv(
            format!("snapshots/wave_rho{}_t{}.csv", row.rho, row.time),
            |w| write_snapshot_csv(&gd, &row.field, w),
        )?);
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig) -> Result<Vec<Output>, CliError> {
    let spec = mesh_spec(cfg);
    let noise = noise_spec(cfg)?;
    let n = cfg.finest_level();
    let grid = TimeGrid::uniform(cfg.final_time, cfg.dt_of_finest())?;
    let gd = spec.discretise(n, grid.clone(), hmm(cfg))?;
    let mut scheme = SchemeConfig::new(noise.wave(cfg.c)?, noise.model);
    scheme.reaction = cfg.reaction;
    scheme.treatment = cfg.treatment;
    scheme.tolerance = cfg.tolerance;
    scheme.snapshot_times = if cfg.snapshot_times.is_empty() {
        vec![cfg.final_time]
    } else {
        cfg.snapshot_times.clone()
    };
    let stepper =
        Stepper::new(&gd, scheme)?.with_modes(noise.spatial_modes(gd.mesh(), spec.rect))?;
    let path = sample_path(&grid, &noise.weights(), cfg.seed, cfg.realization)?;
    let result = stepper.run_realization(&path)?;

    let mut out = Vec::new();
    for s in &result.snapshots {
        out.push(csv(format!("snapshots/run_t{}.csv", s.time), |w| {
            write_snapshot_csv(&gd, &s.field, w)
        })?);
    }
    out.push(csv("steps.csv".into(), |w| {
        use std::io::Write;
        writeln!(w, "step,time,l2_norm,gradient_norm,noise_norm")?;
        writeln!(w, "0,{},{},,", grid.time(0), result.initial_l2_norm)?;
        for (i, d) in result.diagnostics.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                i + 1,
                d.time,
                d.l2_norm,
                d.gradient_norm,
                d.noise_norm
            )?;
        }
        Ok(())
    })?);
    if cfg.write_paths {
        out.push(csv("paths.csv".into(), |w| write_paths_csv(&[path], w))?);
    }
    println!(
        "cells={} steps={} final_l2={:.6e} max_energy={:.6e}",
        gd.num_cells(),
        grid.steps(),
        result
            .diagnostics
            .last()
            .map_or(result.initial_l2_norm, |d| d.l2_norm),
        result.max_energy()
    );
    Ok(out)
}
